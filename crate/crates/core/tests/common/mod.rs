//! Reference implementations and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::Path;

use elacnn::ela::{encode_jpeg, recompress_jpeg, ElaConfig, RgbImage};
use elacnn::loss::Label;
use elacnn::nn::{Conv2d, Dense, Dropout, Flatten, Layer, MaxPool2d, Mode, Model, Relu, Softmax};
use elacnn::optim::AdamConfig;
use elacnn::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, dims: &[usize], lo: f32, hi: f32) -> Tensor {
    let n = dims.iter().product();
    Tensor::new(dims, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Uniform magnitude in `[lo, hi)` with a random sign.
pub fn signed_away_from_zero(rng: &mut ChaCha8Rng, dims: &[usize], lo: f32, hi: f32) -> Tensor {
    let n = dims.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.gen_range(lo..hi);
            if rng.gen::<bool>() { m } else { -m }
        })
        .collect();
    Tensor::new(dims, data).unwrap()
}

pub fn widen(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| f64::from(v)).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// ---------------------------------------------------------------- f64 shadows

/// Valid stride-1 correlation of `(n, h, w, cin)` with `(k, k, cin, cout)` weights.
pub fn conv_ref(x: &[f64], dims: [usize; 4], w: &[f64], b: &[f64], k: usize, cout: usize) -> Vec<f64> {
    let [n, h, wd, cin] = dims;
    let (oh, ow) = (h - k + 1, wd - k + 1);
    let mut out = vec![0.0; n * oh * ow * cout];
    for img in 0..n {
        for y in 0..oh {
            for xo in 0..ow {
                let o = &mut out[((img * oh + y) * ow + xo) * cout..][..cout];
                o.copy_from_slice(b);
                for ky in 0..k {
                    for kx in 0..k {
                        for c in 0..cin {
                            let v = x[((img * h + y + ky) * wd + xo + kx) * cin + c];
                            let wrow = &w[((ky * k + kx) * cin + c) * cout..][..cout];
                            for (acc, &wv) in o.iter_mut().zip(wrow) {
                                *acc += v * wv;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// `(n, fin) × (fin, fout) + b`.
pub fn dense_ref(x: &[f64], n: usize, w: &[f64], b: &[f64], fin: usize, fout: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * fout);
    for row in x.chunks_exact(fin).take(n) {
        let mut acc = b.to_vec();
        for (i, &xi) in row.iter().enumerate() {
            for (a, &wv) in acc.iter_mut().zip(&w[i * fout..(i + 1) * fout]) {
                *a += xi * wv;
            }
        }
        out.extend(acc);
    }
    out
}

pub fn relu_ref(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

/// 2×2 stride-2 max pooling of `(n, h, w, c)`.
pub fn pool_ref(x: &[f64], dims: [usize; 4]) -> Vec<f64> {
    let [n, h, w, c] = dims;
    let mut out = Vec::with_capacity(n * h / 2 * w / 2 * c);
    for img in 0..n {
        for y in 0..h / 2 {
            for xo in 0..w / 2 {
                for ch in 0..c {
                    let at = |dy: usize, dx: usize| x[((img * h + 2 * y + dy) * w + 2 * xo + dx) * c + ch];
                    out.push(at(0, 0).max(at(0, 1)).max(at(1, 0)).max(at(1, 1)));
                }
            }
        }
    }
    out
}

pub fn softmax_ref(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn cross_entropy_ref(logits: &[f64], label: usize) -> f64 {
    -softmax_ref(logits)[label].ln()
}

// ------------------------------------------------------- finite differences

pub const FD_STEP: f64 = 1e-5;

/// Central differences of `f` at `at`.
pub fn numeric_grad(at: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut x = at.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + FD_STEP;
            let up = f(&x);
            x[i] = orig - FD_STEP;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// `‖a − n‖ / max(‖a‖, ‖n‖)`, zero when both vanish.
pub fn rel_err(analytic: &Tensor, numeric: &[f64]) -> f64 {
    let a = widen(analytic);
    assert_eq!(a.len(), numeric.len());
    let diff = a.iter().zip(numeric).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = dot(&a, &a).sqrt().max(dot(numeric, numeric).sqrt());
    if scale == 0.0 { 0.0 } else { diff / scale }
}

/// Worst relative error over the checked tensors of one instance.
pub type Check = fn(u64) -> f64;

pub fn check_conv(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (k, cin, cout) = (r.gen_range(1..=3), r.gen_range(1..=3), r.gen_range(1..=3));
    let dims = [r.gen_range(1..=2), k + r.gen_range(0..=4), k + r.gen_range(0..=4), cin];
    let mut layer = Conv2d::new(k, cin, cout).unwrap();
    layer.set_weights(random_tensor(&mut r, &[k, k, cin, cout], -1.0, 1.0)).unwrap();
    layer.set_bias(random_tensor(&mut r, &[cout], -1.0, 1.0)).unwrap();
    let x = random_tensor(&mut r, &dims, -1.0, 1.0);
    let out = layer.forward(&x).unwrap();
    let g = random_tensor(&mut r, out.dims(), -1.0, 1.0);
    let gin = layer.backward(&g).unwrap();

    let (xv, wv, bv, gv) = (widen(&x), widen(layer.weights()), widen(layer.bias()), widen(&g));
    let e_in = rel_err(&gin, &numeric_grad(&xv, |xp| dot(&conv_ref(xp, dims, &wv, &bv, k, cout), &gv)));
    let e_w = rel_err(layer.grad_weights(), &numeric_grad(&wv, |wp| dot(&conv_ref(&xv, dims, wp, &bv, k, cout), &gv)));
    let e_b = rel_err(layer.grad_bias(), &numeric_grad(&bv, |bp| dot(&conv_ref(&xv, dims, &wv, bp, k, cout), &gv)));
    e_in.max(e_w).max(e_b)
}

pub fn check_dense(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (n, fin, fout) = (r.gen_range(1..=3), r.gen_range(1..=10), r.gen_range(1..=5));
    let mut layer = Dense::new(fin, fout).unwrap();
    layer.set_weights(random_tensor(&mut r, &[fin, fout], -1.0, 1.0)).unwrap();
    layer.set_bias(random_tensor(&mut r, &[fout], -1.0, 1.0)).unwrap();
    let x = random_tensor(&mut r, &[n, fin], -1.0, 1.0);
    layer.forward(&x).unwrap();
    let g = random_tensor(&mut r, &[n, fout], -1.0, 1.0);
    let gin = layer.backward(&g).unwrap();

    let (xv, wv, bv, gv) = (widen(&x), widen(layer.weights()), widen(layer.bias()), widen(&g));
    let e_in = rel_err(&gin, &numeric_grad(&xv, |xp| dot(&dense_ref(xp, n, &wv, &bv, fin, fout), &gv)));
    let e_w = rel_err(layer.grad_weights(), &numeric_grad(&wv, |wp| dot(&dense_ref(&xv, n, wp, &bv, fin, fout), &gv)));
    let e_b = rel_err(layer.grad_bias(), &numeric_grad(&bv, |bp| dot(&dense_ref(&xv, n, &wv, bp, fin, fout), &gv)));
    e_in.max(e_w).max(e_b)
}

pub fn check_relu(seed: u64) -> f64 {
    let mut r = rng(seed);
    let dims = [r.gen_range(1..=3), r.gen_range(1..=8)];
    let x = signed_away_from_zero(&mut r, &dims, 0.05, 1.0);
    let mut layer = Relu::new();
    layer.forward(&x);
    let g = random_tensor(&mut r, &dims, -1.0, 1.0);
    let gin = layer.backward(&g).unwrap();
    let gv = widen(&g);
    rel_err(&gin, &numeric_grad(&widen(&x), |xp| dot(&relu_ref(xp), &gv)))
}

pub fn check_pool(seed: u64) -> f64 {
    let mut r = rng(seed);
    let dims = [r.gen_range(1..=2), 2 * r.gen_range(1..=4), 2 * r.gen_range(1..=4), r.gen_range(1..=3)];
    let x = random_tensor(&mut r, &dims, -1.0, 1.0);
    let mut layer = MaxPool2d::new();
    let out = layer.forward(&x).unwrap();
    let g = random_tensor(&mut r, out.dims(), -1.0, 1.0);
    let gin = layer.backward(&g).unwrap();
    let gv = widen(&g);
    rel_err(&gin, &numeric_grad(&widen(&x), |xp| dot(&pool_ref(xp, dims), &gv)))
}

pub fn check_dropout(seed: u64) -> f64 {
    let mut r = rng(seed);
    let dims = [r.gen_range(1..=3), r.gen_range(2..=16)];
    let rate = [0.25f32, 0.5][r.gen_range(0..2)];
    let x = signed_away_from_zero(&mut r, &dims, 0.05, 1.0);
    let mut layer = Dropout::new(rate, seed).unwrap();
    let out = layer.forward(&x, Mode::Train).unwrap();
    let kept: Vec<f64> = out.data().iter().map(|&v| if v != 0.0 { 1.0 } else { 0.0 }).collect();
    let g = random_tensor(&mut r, &dims, -1.0, 1.0);
    let gin = layer.backward(&g).unwrap();
    let (gv, keep) = (widen(&g), 1.0 - f64::from(rate));
    let shadow = |xp: &[f64]| xp.iter().zip(&kept).zip(&gv).map(|((v, k), g)| v * k / keep * g).sum::<f64>();
    rel_err(&gin, &numeric_grad(&widen(&x), shadow))
}

pub fn check_flatten(seed: u64) -> f64 {
    let mut r = rng(seed);
    let dims = [r.gen_range(1..=2), r.gen_range(1..=4), r.gen_range(1..=4), r.gen_range(1..=3)];
    let x = random_tensor(&mut r, &dims, -1.0, 1.0);
    let mut layer = Flatten::default();
    let out = layer.forward(&x).unwrap();
    assert_eq!(out.dims(), [dims[0], dims[1] * dims[2] * dims[3]]);
    let g = random_tensor(&mut r, out.dims(), -1.0, 1.0);
    let gin = layer.backward(&g).unwrap();
    assert_eq!(gin.dims(), x.dims());
    let gv = widen(&g);
    rel_err(&gin, &numeric_grad(&widen(&x), |xp| dot(xp, &gv)))
}

pub fn check_softmax(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (n, width) = (r.gen_range(1..=3), r.gen_range(2..=5));
    let x = random_tensor(&mut r, &[n, width], -3.0, 3.0);
    let mut layer = Softmax::new();
    layer.forward(&x).unwrap();
    let g = random_tensor(&mut r, &[n, width], -1.0, 1.0);
    let gin = layer.backward(&g).unwrap();
    let gv = widen(&g);
    let shadow = |xp: &[f64]| {
        let probs: Vec<f64> = xp.chunks_exact(width).flat_map(softmax_ref).collect();
        dot(&probs, &gv)
    };
    rel_err(&gin, &numeric_grad(&widen(&x), shadow))
}

pub const LAYER_CHECKS: [(&str, Check); 7] = [
    ("conv2d", check_conv),
    ("relu", check_relu),
    ("maxpool2d", check_pool),
    ("dropout", check_dropout),
    ("flatten", check_flatten),
    ("dense", check_dense),
    ("softmax", check_softmax),
];

pub const INSTANCES_PER_LAYER: u64 = 24;

/// `(layer, worst relative error)` over every instance of every layer.
pub fn layer_gradient_suite() -> Vec<(&'static str, f64)> {
    LAYER_CHECKS
        .iter()
        .map(|&(name, check)| (name, (0..INSTANCES_PER_LAYER).map(|s| check(1000 + s)).fold(0.0, f64::max)))
        .collect()
}

// ------------------------------------------------------- whole-model shadow

/// f64 copy of the classifier's parameters with an evaluation-mode forward.
pub struct ShadowModel {
    pub params: Vec<Vec<f64>>,
}

const CONV1: usize = 0;
const CONV2: usize = 2;
const HIDDEN: usize = 4;
const OUTPUT: usize = 6;

impl ShadowModel {
    pub fn of(model: &Model) -> Self {
        Self { params: model.parameters().into_iter().map(widen).collect() }
    }

    fn conv1(&self, x: &[f64]) -> Vec<f64> {
        relu_ref(&conv_ref(x, [1, 128, 128, 3], &self.params[CONV1], &self.params[CONV1 + 1], 5, 32))
    }

    fn conv2(&self, a1: &[f64]) -> Vec<f64> {
        let a2 = relu_ref(&conv_ref(a1, [1, 124, 124, 32], &self.params[CONV2], &self.params[CONV2 + 1], 5, 32));
        pool_ref(&a2, [1, 120, 120, 32])
    }

    fn head(&self, pooled: &[f64]) -> Vec<f64> {
        let h = relu_ref(&dense_ref(pooled, 1, &self.params[HIDDEN], &self.params[HIDDEN + 1], 115_200, 256));
        dense_ref(&h, 1, &self.params[OUTPUT], &self.params[OUTPUT + 1], 256, 2)
    }

    /// Cross-entropy of `label` with parameter `(tensor, index)` set to `value`,
    /// reusing the cached activations that the parameter cannot affect.
    fn loss_with(&mut self, cache: &Activations, tensor: usize, index: usize, value: f64, label: usize) -> f64 {
        let orig = self.params[tensor][index];
        self.params[tensor][index] = value;
        let logits = match tensor {
            CONV1 | 1 => {
                let a1 = self.conv1(&cache.input);
                self.head(&self.conv2(&a1))
            }
            CONV2 | 3 => self.head(&self.conv2(&cache.a1)),
            _ => self.head(&cache.pooled),
        };
        self.params[tensor][index] = orig;
        cross_entropy_ref(&logits, label)
    }
}

struct Activations {
    input: Vec<f64>,
    a1: Vec<f64>,
    pooled: Vec<f64>,
}

/// Outcome of the whole-model finite-difference spot check.
pub struct SpotCheck {
    pub worst: f64,
    pub checked: usize,
    pub zero_both: usize,
}

/// Compares `checked` nonzero analytic parameter gradients of a seeded model on
/// one random input against f64 central differences. Parameters whose f64
/// difference is exactly zero (dead units) must have a zero analytic gradient
/// and are counted separately.
pub fn model_spot_check(seed: u64, checked: usize) -> SpotCheck {
    let mut r = rng(seed);
    let mut model = elacnn::nn::build_paper_model(seed);
    for (i, p) in model.parameters().into_iter().enumerate() {
        if i % 2 == 1 {
            assert!(p.data().iter().all(|&v| v == 0.0));
        }
    }
    // Small nonzero biases so bias gradients are exercised away from init.
    let mut params: Vec<Tensor> = model.parameters().into_iter().cloned().collect();
    for bias in params.iter_mut().skip(1).step_by(2) {
        *bias = random_tensor(&mut r, bias.dims(), -0.05, 0.05);
    }
    model.load_parameters(params).unwrap();

    let x = random_tensor(&mut r, &[128, 128, 3], 0.0, 1.0);
    let label = Label::Tampered;
    let probs = model.forward(&x).unwrap();
    let grad = probs.sub(&Tensor::from_slice(&label.one_hot()).unwrap()).unwrap();
    model.backward(&grad).unwrap();
    let analytic: Vec<Tensor> = model.gradients().into_iter().cloned().collect();

    let mut shadow = ShadowModel::of(&model);
    let input = widen(&x);
    let a1 = shadow.conv1(&input);
    let pooled = shadow.conv2(&a1);
    let cache = Activations { input, a1, pooled };

    let per_layer = checked.div_ceil(4);
    let (mut worst, mut done, mut zero_both) = (0.0f64, 0, 0);
    for layer in 0..4 {
        let mut taken = 0;
        let mut attempts = 0;
        while taken < per_layer && done < checked {
            attempts += 1;
            assert!(attempts < 10_000, "no live parameters found in layer {layer}");
            let tensor = 2 * layer + usize::from(r.gen_bool(0.25));
            let index = r.gen_range(0..shadow.params[tensor].len());
            let v = shadow.params[tensor][index];
            let up = shadow.loss_with(&cache, tensor, index, v + FD_STEP, label.index());
            let down = shadow.loss_with(&cache, tensor, index, v - FD_STEP, label.index());
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = f64::from(analytic[tensor].data()[index]);
            if numeric == 0.0 {
                assert_eq!(a, 0.0, "dead parameter ({tensor}, {index}) has analytic gradient {a}");
                zero_both += 1;
                continue;
            }
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()));
            taken += 1;
            done += 1;
        }
    }
    SpotCheck { worst, checked: done, zero_both }
}

// ------------------------------------------------------------------- Adam

/// Ten steps of Adam on `f(p) = p²` from `p₀ = 1`, written as plain scalar code.
pub fn adam_scalar_reference(cfg: &AdamConfig, steps: u32) -> Vec<f64> {
    let (lr, b1, b2, eps) = (cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon);
    let (mut p, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
    let mut out = Vec::new();
    for t in 1..=steps as i32 {
        let g = 2.0 * p;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let m_hat = m / (1.0 - b1.powi(t));
        let v_hat = v / (1.0 - b2.powi(t));
        p -= lr * m_hat / (v_hat.sqrt() + eps);
        out.push(p);
    }
    out
}

// -------------------------------------------------------------------- ELA

/// Per-pixel absolute difference stretched with `round(d · 255 / max)`.
pub fn difference_ref(a: &RgbImage, b: &RgbImage) -> RgbImage {
    let mut diff = vec![0u8; a.data().len()];
    let mut max = 0u8;
    for y in 0..a.height() {
        for x in 0..a.width() {
            let (pa, pb) = (a.pixel(x, y), b.pixel(x, y));
            for c in 0..3 {
                let d = (i16::from(pa[c]) - i16::from(pb[c])).unsigned_abs() as u8;
                diff[((y * a.width() + x) * 3) as usize + c] = d;
                max = max.max(d);
            }
        }
    }
    if max > 0 {
        for d in &mut diff {
            *d = (f64::from(*d) * 255.0 / f64::from(max)).round() as u8;
        }
    }
    RgbImage::new(a.width(), a.height(), diff).unwrap()
}

/// Bilinear interpolation evaluated independently for every output sample.
pub fn resize_ref(img: &RgbImage, w: u32, h: u32) -> RgbImage {
    let sample = |i: u32, src: u32, dst: u32| {
        let pos = ((f64::from(i) + 0.5) * f64::from(src) / f64::from(dst) - 0.5).max(0.0).min(f64::from(src - 1));
        let lo = pos.floor() as u32;
        (lo, (lo + 1).min(src - 1), pos - pos.floor())
    };
    RgbImage::from_fn(w, h, |x, y| {
        let (x0, x1, fx) = sample(x, img.width(), w);
        let (y0, y1, fy) = sample(y, img.height(), h);
        let mut px = [0u8; 3];
        for c in 0..3 {
            let at = |xx, yy| f64::from(img.pixel(xx, yy)[c]);
            let top = (1.0 - fx) * at(x0, y0) + fx * at(x1, y0);
            let bottom = (1.0 - fx) * at(x0, y1) + fx * at(x1, y1);
            px[c] = ((1.0 - fy) * top + fy * bottom).round().clamp(0.0, 255.0) as u8;
        }
        px
    })
    .unwrap()
}

pub fn to_tensor_ref(img: &RgbImage) -> Vec<f32> {
    img.data().iter().map(|&v| v as f32 / 255.0).collect()
}

/// Recompress, difference, resize and scale, each stage from its reference.
pub fn ela_reference(img: &RgbImage, cfg: &ElaConfig) -> Vec<f32> {
    let recompressed = recompress_jpeg(img, cfg.jpeg_quality).unwrap();
    let diff = difference_ref(img, &recompressed);
    to_tensor_ref(&resize_ref(&diff, cfg.target_width, cfg.target_height))
}

pub fn random_image(r: &mut ChaCha8Rng, w: u32, h: u32) -> RgbImage {
    RgbImage::from_fn(w, h, |_, _| [r.gen(), r.gen(), r.gen()]).unwrap()
}

/// Ten deterministic images of assorted sizes and content.
pub fn ela_fixtures() -> Vec<RgbImage> {
    let mut r = rng(7);
    let smooth = |w: u32, h: u32, phase: u32| {
        RgbImage::from_fn(w, h, move |x, y| {
            [((x * 255) / w.max(2)) as u8, ((y * 255) / h.max(2)) as u8, ((x + y + phase) % 256) as u8]
        })
        .unwrap()
    };
    let checker = |w: u32, h: u32, cell: u32| {
        RgbImage::from_fn(w, h, move |x, y| if (x / cell + y / cell) % 2 == 0 { [230, 40, 40] } else { [20, 20, 200] })
            .unwrap()
    };
    vec![
        smooth(128, 128, 0),
        smooth(200, 150, 17),
        smooth(37, 53, 99),
        checker(96, 64, 8),
        checker(131, 77, 5),
        random_image(&mut r, 64, 64),
        random_image(&mut r, 17, 300),
        RgbImage::filled(16, 16, 128).unwrap(),
        spliced(&mut r, 160, 120),
        RgbImage::from_fn(8, 8, |x, y| [(x * 30) as u8, (y * 30) as u8, 255]).unwrap(),
    ]
}

/// A smooth image saved through JPEG, with a noisy rectangle pasted in.
pub fn spliced(r: &mut ChaCha8Rng, w: u32, h: u32) -> RgbImage {
    let base = RgbImage::from_fn(w, h, |x, y| [(x % 256) as u8, (y % 256) as u8, ((x * y) % 256) as u8]).unwrap();
    let base = recompress_jpeg(&base, 75).unwrap();
    let (x0, y0, pw, ph) = (w / 4, h / 4, w / 3, h / 3);
    let noise: Vec<[u8; 3]> = (0..pw * ph).map(|_| [r.gen(), r.gen(), r.gen()]).collect();
    RgbImage::from_fn(w, h, |x, y| {
        if (x0..x0 + pw).contains(&x) && (y0..y0 + ph).contains(&y) {
            noise[((y - y0) * pw + x - x0) as usize]
        } else {
            base.pixel(x, y)
        }
    })
    .unwrap()
}

// ---------------------------------------------------------------- datasets

/// Writes `per_class` JPEG images into `root/Au` and `root/Tp`. Authentic
/// images are single-compressed gradients; tampered ones carry a pasted patch.
pub fn write_dataset(root: &Path, per_class: usize, seed: u64) {
    let mut r = rng(seed);
    for dir in ["Au", "Tp"] {
        std::fs::create_dir_all(root.join(dir)).unwrap();
    }
    for i in 0..per_class {
        let (w, h) = (r.gen_range(40..72), r.gen_range(40..72));
        let tint: [u8; 3] = [r.gen(), r.gen(), r.gen()];
        let au = RgbImage::from_fn(w, h, |x, y| {
            [tint[0].wrapping_add((x * 3) as u8), tint[1].wrapping_add((y * 3) as u8), tint[2]]
        })
        .unwrap();
        std::fs::write(root.join("Au").join(format!("au_{i:03}.jpg")), encode_jpeg(&au, 85).unwrap()).unwrap();
        let tp = spliced(&mut r, w, h);
        std::fs::write(root.join("Tp").join(format!("tp_{i:03}.jpg")), encode_jpeg(&tp, 85).unwrap()).unwrap();
    }
}

/// Eight constant `(128, 128, 3)` tensors, dark for authentic and bright for
/// tampered, and two held-out ones of each kind.
pub fn overfit_sets() -> (elacnn::dataset::InMemory, elacnn::dataset::InMemory) {
    let make = |values: &[(f32, Label)]| {
        let inputs = values.iter().map(|&(v, _)| Tensor::full(&[128, 128, 3], v)).collect();
        let labels = values.iter().map(|&(_, l)| l).collect();
        elacnn::dataset::InMemory::new(inputs, labels).unwrap()
    };
    use Label::{Authentic as A, Tampered as T};
    let train = make(&[(0.05, A), (0.10, A), (0.15, A), (0.20, A), (0.80, T), (0.85, T), (0.90, T), (0.95, T)]);
    let val = make(&[(0.12, A), (0.18, A), (0.82, T), (0.88, T)]);
    (train, val)
}

/// A model whose layers are all the given kinds, for table checks.
pub fn kinds(model: &Model) -> Vec<&'static str> {
    model.layers().iter().map(Layer::kind).collect()
}
